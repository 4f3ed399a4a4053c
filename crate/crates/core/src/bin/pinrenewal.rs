fn main() {
    let code = renewal_core::cli::main_with_args(std::env::args().skip(1));
    std::process::exit(code);
}
