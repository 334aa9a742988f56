fn main() {
    std::process::exit(fairtcp_sim::cli::simtable(std::env::args_os()));
}
