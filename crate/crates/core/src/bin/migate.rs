fn main() {
    std::process::exit(migate::cli::run());
}
