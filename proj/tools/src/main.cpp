#include "cli.hpp"

int main(int argc, char** argv) { return fcnpose::cli::run(argc, argv); }
