fn main() {
    std::process::exit(gradolab::cli::run(std::env::args_os()));
}
