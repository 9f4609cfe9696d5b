#include "dh/cli.hpp"

int main(int argc, char** argv) { return dh::run_cli(argc, argv); }
