#include "wicklab/cli_runner.hpp"

int main(int argc, char** argv) { return wicklab::run_cli(argc, argv); }
