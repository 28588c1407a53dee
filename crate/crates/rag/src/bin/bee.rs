fn main() {
    std::process::exit(bee_rag::cli::main());
}
