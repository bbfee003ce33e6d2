fn main() -> std::process::ExitCode {
    riskscope::cli::main()
}
