fn main() {
    std::process::exit(adaptive_gt::cli::run(std::env::args_os()));
}
