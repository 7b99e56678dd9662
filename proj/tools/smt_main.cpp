#include "smt/phasecli.hpp"

int main(int argc, char** argv) { return smt::cli::run_cli(argc, argv); }
