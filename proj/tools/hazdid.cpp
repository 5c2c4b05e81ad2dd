#include "cli.hpp"

int main(int argc, char** argv) { return hazdid::cli::run(argc, argv); }
