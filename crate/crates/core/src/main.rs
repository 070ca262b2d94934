fn main() {
    std::process::exit(catree::cli::run(std::env::args_os()));
}
