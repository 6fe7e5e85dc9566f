#include "cli.hpp"

int main(int argc, char** argv) { return osmac::cli::run(argc, argv); }
