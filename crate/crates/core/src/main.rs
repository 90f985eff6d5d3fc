fn main() -> std::process::ExitCode {
    labelreach::cli::main()
}
