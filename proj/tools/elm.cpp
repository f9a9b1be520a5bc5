#include "elm/cli.hpp"

int main(int argc, char** argv) { return elm::run_cli(argc, argv); }
