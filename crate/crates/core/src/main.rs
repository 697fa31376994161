fn main() -> std::process::ExitCode {
    gentau::cli::main()
}
