fn main() {
    std::process::exit(breglr::cli::run());
}
