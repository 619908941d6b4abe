#include "nkfg/cli.hpp"

int main(int argc, char** argv) { return nkfg::run_cli(argc, argv); }
