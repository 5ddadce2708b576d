fn main() {
    std::process::exit(kgforge::cli::run(std::env::args_os()));
}
