fn main() {
    std::process::exit(llm_interop::cli::main_exit_code());
}
