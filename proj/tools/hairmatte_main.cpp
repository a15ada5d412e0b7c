#include "hairmatte/cli.hpp"

int main(int argc, char** argv) { return hairmatte::run_cli(argc, argv); }
