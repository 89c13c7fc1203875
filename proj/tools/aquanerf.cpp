#include "aqua/cli.hpp"

int main(int argc, char** argv) { return aqua::cli::run(argc, argv); }
