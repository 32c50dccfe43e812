document.getElementById('x');
