#include "cli/cli.hpp"

int main(int argc, char** argv) { return score::cli::run(argc, argv); }
