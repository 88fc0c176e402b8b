fn main() -> std::process::ExitCode {
    quadplane::cli::main()
}
