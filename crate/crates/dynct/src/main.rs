fn main() {
    std::process::exit(dynct::cli::cli_main(std::env::args_os()));
}
