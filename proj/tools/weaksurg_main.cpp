#include "weaksurg/cli.hpp"

int main(int argc, char** argv) { return weaksurg::cli::run(argc, argv); }
