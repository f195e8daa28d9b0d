#include "cli.hpp"

int main(int argc, char** argv) { return epnet::cli::run(argc, argv); }
