#include "polycoord/cli.hpp"

int main(int argc, char** argv) { return polycoord::run_cli(argc, argv); }
