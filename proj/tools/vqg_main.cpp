#include "vqg/cli.hpp"

int main(int argc, char** argv) { return vqg::cli::main(argc, argv); }
