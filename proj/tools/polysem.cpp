#include "polysem/cli.hpp"

int main(int argc, char** argv) { return polysem::cli::run_cli(argc, argv); }
