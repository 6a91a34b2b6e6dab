#include "qg/cli.hpp"

int main(int argc, char** argv) { return qg::run_cli(argc, argv); }
