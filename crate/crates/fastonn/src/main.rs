fn main() {
    std::process::exit(fastonn::cli::run());
}
