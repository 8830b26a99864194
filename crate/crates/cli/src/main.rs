fn main() {
    std::process::exit(faqir_cli::run(std::env::args_os()));
}
