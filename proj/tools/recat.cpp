#include "recat/cli.hpp"

int main(int argc, char** argv) { return recat::cli::run(argc, argv); }
