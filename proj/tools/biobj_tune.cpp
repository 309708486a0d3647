#include "biobj/cli.hpp"

int main(int argc, char** argv) { return biobj::cli_main(argc, argv); }
