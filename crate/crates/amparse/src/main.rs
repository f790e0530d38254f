fn main() {
    std::process::exit(amparse::cli::run());
}
