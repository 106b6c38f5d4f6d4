#include "krew/cli.hpp"

int main(int argc, char** argv) { return krew::cli_main(argc, argv); }
