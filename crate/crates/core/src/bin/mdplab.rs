fn main() {
    std::process::exit(mdplab::cli::cli_main(std::env::args_os()));
}
