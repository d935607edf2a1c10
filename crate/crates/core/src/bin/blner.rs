fn main() {
    std::process::exit(blner::cli::run(std::env::args_os()));
}
