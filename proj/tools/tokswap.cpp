#include "tokswap/cli.hpp"

int main(int argc, char** argv) { return tokswap::cli::run(argc, argv); }
