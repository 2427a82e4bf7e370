fn main() {
    std::process::exit(flrt::cli::cli_main(std::env::args_os()));
}
