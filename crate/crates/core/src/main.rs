fn main() {
    std::process::exit(anml::cli::run(std::env::args_os()));
}
