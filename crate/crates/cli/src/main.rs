fn main() {
    std::process::exit(avsr_cli::run(std::env::args_os()));
}
