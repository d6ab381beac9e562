fn main() {
    std::process::exit(credit_divergence::cli::main_with_env());
}
