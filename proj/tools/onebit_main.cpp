#include "onebit/cli.hpp"

int main(int argc, char** argv) { return onebit::cli::run(argc, argv); }
