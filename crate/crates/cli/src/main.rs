fn main() {
    std::process::exit(citesum_cli::run(std::env::args_os()));
}
