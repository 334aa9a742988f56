fn main() {
    std::process::exit(fairtcp_sim::cli::simrun(std::env::args_os()));
}
