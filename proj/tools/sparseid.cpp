#include "sparseid/cli.hpp"

int main(int argc, char** argv) { return sparseid::run_cli(argc, argv); }
