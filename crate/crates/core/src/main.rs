fn main() {
    std::process::exit(protolens::cli::run(std::env::args_os()));
}
