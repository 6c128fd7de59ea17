fn main() -> std::process::ExitCode {
    persuasion_iv::cli::main()
}
