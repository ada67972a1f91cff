#include "certiprop/cli.hpp"

int main(int argc, char** argv) { return certiprop::cli::run(argc, argv); }
