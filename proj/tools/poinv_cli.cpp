#include "poinv/commands.hpp"

int main(int argc, char** argv) { return poinv::cli::run_command(argc, argv); }
