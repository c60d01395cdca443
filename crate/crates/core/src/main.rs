fn main() {
    std::process::exit(nhstokes::cli::run());
}
