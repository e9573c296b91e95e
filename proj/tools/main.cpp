#include "pamenc/cli.hpp"

int main(int argc, char** argv) { return pamenc::cli_dispatch(argc, argv); }
