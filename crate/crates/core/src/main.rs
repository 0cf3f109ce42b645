fn main() {
    std::process::exit(attrstress::cli::main());
}
