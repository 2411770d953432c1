fn main() {
    std::process::exit(ctr_cli::run_command(std::env::args_os()));
}
