#include "nevai/cli.hpp"

int main(int argc, char** argv) { return nevai::cli::run(argc, argv); }
