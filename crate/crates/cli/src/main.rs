fn main() {
    std::process::exit(looplab_cli::run_cli(std::env::args_os()));
}
