fn main() {
    std::process::exit(roadsearch_cli::run(std::env::args_os()));
}
