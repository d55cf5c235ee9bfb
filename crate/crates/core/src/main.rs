fn main() {
    sobolev_topo::init_thread_pool();
    std::process::exit(sobolev_topo::cli::main_entry());
}
