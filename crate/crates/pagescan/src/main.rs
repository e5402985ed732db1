fn main() -> std::process::ExitCode {
    pagescan::cli::main()
}
