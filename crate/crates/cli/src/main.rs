fn main() {
    std::process::exit(camloc_cli::run(std::env::args_os()));
}
