fn main() {
    std::process::exit(nsqkd::cli::run(std::env::args_os()));
}
