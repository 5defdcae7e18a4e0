fn main() -> std::process::ExitCode {
    sdr_kit::cli::main_entry()
}
