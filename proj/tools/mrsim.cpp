#include "mrsim/cli/commands.hpp"

int main(int argc, char** argv) { return mrsim::cli::run_cli(argc, argv); }
