#include "critpath/cli/cli.hpp"

int main(int argc, char** argv) { return critpath::cli::run_cli(argc, argv); }
