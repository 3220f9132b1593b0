fn main() {
    std::process::exit(nestseg_cli::run(std::env::args_os()));
}
