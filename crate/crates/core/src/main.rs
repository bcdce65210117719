fn main() {
    std::process::exit(hetrofair::cli::run(std::env::args_os()));
}
