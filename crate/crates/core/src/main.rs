fn main() {
    std::process::exit(valence_audit::cli::run(std::env::args_os()));
}
