fn main() {
    std::process::exit(tandem_fusion::cli::run(std::env::args_os()));
}
