fn main() {
    std::process::exit(lois::cli::run(std::env::args_os()));
}
