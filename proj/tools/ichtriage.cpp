#include "ichtriage/cli.hpp"

int main(int argc, char** argv) { return ichtriage::cli::run_cli(argc, argv); }
