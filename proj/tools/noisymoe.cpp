#include "noisymoe/cli.hpp"

int main(int argc, char** argv) { return noisymoe::run_cli(argc, argv); }
