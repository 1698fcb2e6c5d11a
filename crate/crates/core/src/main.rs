fn main() -> std::process::ExitCode {
    tcm_cannon::cli::main_entry()
}
