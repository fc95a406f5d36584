#include "touchloc/cli.hpp"

int main(int argc, char** argv) { return touchloc::run_cli(argc, argv); }
